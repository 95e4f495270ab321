//! Concave inner problem for a fixed set of relay gains.
//!
//! Each mode is summarized by a [`Column`]: its per-unit SNR `s`, the relay
//! power it costs per unit of band (`c`) and per unit of source power (`d`).
//! The problem
//!
//! ```text
//! max Σ τ_j C(θ_j s_j / τ_j)   s.t.  Στ = 1, Σθ = 1, Σ c_j τ_j + d_j θ_j ≤ budget
//! ```
//!
//! is solved through its two-price dual. With source price `α` and relay price
//! `β`, a mode earns `h_j = ψ(s_j, α + β d_j) − β c_j` per unit of band, where
//! `ψ(s, A) = max_x C(s x) − A x`. The dual function
//! `G(α, β) = α + β·budget + max_j h_j` is convex; it is minimized by nested
//! bisection on its subgradients, and the primal point is rebuilt from the
//! modes that attain the maximum on either side of the optimal prices.

use std::f64::consts::LN_2;

use crate::channel::mode_term;

const TWO_LN2: f64 = 2.0 * LN_2;
const MAX_BISECTIONS: usize = 400;
const MAX_BRACKET_STEPS: usize = 2200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Column {
    pub s: f64,
    pub c: f64,
    pub d: f64,
}

impl Column {
    pub fn silent(s: f64) -> Self {
        Self { s, c: 0.0, d: 0.0 }
    }
}

/// Optimal power-to-band ratio `x = θ/τ` of a mode priced at `price`.
#[inline]
pub(crate) fn power_ratio(s: f64, price: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    (1.0 / (TWO_LN2 * price) - 1.0 / s).max(0.0)
}

/// `max_x C(s x) − price·x` in bits.
#[inline]
pub(crate) fn psi(s: f64, price: f64) -> f64 {
    if s <= TWO_LN2 * price {
        return 0.0;
    }
    0.5 * (s / (TWO_LN2 * price)).log2() - 1.0 / TWO_LN2 + price / s
}

/// Per-band profit of a column at prices `(alpha, beta)`.
#[inline]
pub(crate) fn profit(col: &Column, alpha: f64, beta: f64) -> f64 {
    psi(col.s, alpha + beta * col.d) - beta * col.c
}

#[derive(Clone, Copy, Debug)]
struct Pick {
    j: usize,
    x: f64,
    h: f64,
}

/// Most profitable column; ties go to the cheaper relay cost, then the lower
/// index.
fn best(cols: &[Column], alpha: f64, beta: f64) -> Pick {
    let mut pick = Pick {
        j: 0,
        x: 0.0,
        h: f64::NEG_INFINITY,
    };
    let mut pick_relay = f64::INFINITY;
    for (j, col) in cols.iter().enumerate() {
        let price = alpha + beta * col.d;
        let h = psi(col.s, price) - beta * col.c;
        if h < pick.h {
            continue;
        }
        let x = power_ratio(col.s, price);
        let relay = col.c + col.d * x;
        if h > pick.h || relay < pick_relay {
            pick = Pick { j, x, h };
            pick_relay = relay;
        }
    }
    pick
}

/// Solution of the source-price level for a fixed relay price.
#[derive(Clone, Debug)]
struct Level {
    alpha: f64,
    nu: f64,
    /// `(mode, band share, power ratio)` of the one or two modes in use.
    parts: [(usize, f64, f64); 2],
    relay: f64,
}

impl Level {
    fn accumulate(&self, weight: f64, tau: &mut [f64], theta: &mut [f64]) {
        for &(j, share, x) in &self.parts {
            tau[j] += weight * share;
            theta[j] += weight * share * x;
        }
    }
}

fn solve_alpha(cols: &[Column], beta: f64, rel_tol: f64) -> Level {
    let s_max = cols.iter().map(|c| c.s).fold(0.0, f64::max);
    let s0 = cols[0].s;
    // Above `hi` every power ratio is zero; below `lo` the best mode wants
    // more than the whole source budget.
    let mut hi = s_max / TWO_LN2;
    let mut lo = s0 / (TWO_LN2 * (1.0 + s0));
    let mut steps = 0;
    while best(cols, lo, beta).x <= 1.0 && steps < MAX_BRACKET_STEPS {
        hi = lo;
        lo *= 0.5;
        steps += 1;
    }
    for _ in 0..MAX_BISECTIONS {
        if hi / lo - 1.0 <= rel_tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if best(cols, mid, beta).x > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let left = best(cols, lo, beta);
    let right = best(cols, hi, beta);
    if left.j == right.j {
        let col = &cols[left.j];
        let alpha = col.s / (TWO_LN2 * (1.0 + col.s)) - beta * col.d;
        let alpha = if alpha > 0.0 { alpha } else { hi };
        let nu = profit(col, alpha, beta);
        return Level {
            alpha,
            nu,
            parts: [(left.j, 1.0, 1.0), (left.j, 0.0, 0.0)],
            relay: col.c + col.d,
        };
    }
    let alpha = hi;
    let (cl, cr) = (&cols[left.j], &cols[right.j]);
    let xl = power_ratio(cl.s, alpha + beta * cl.d);
    let xr = power_ratio(cr.s, alpha + beta * cr.d);
    let w = if xl > xr {
        ((1.0 - xr) / (xl - xr)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    // Normalize so that the power shares sum to one exactly.
    let total = w * xl + (1.0 - w) * xr;
    let (xl, xr) = if total > 0.0 {
        (xl / total, xr / total)
    } else {
        (1.0, 1.0)
    };
    let nu = right.h.max(profit(cl, alpha, beta));
    Level {
        alpha,
        nu,
        parts: [(left.j, w, xl), (right.j, 1.0 - w, xr)],
        relay: w * (cl.c + cl.d * xl) + (1.0 - w) * (cr.c + cr.d * xr),
    }
}

/// Primal and dual solution of the inner problem.
#[derive(Clone, Debug)]
pub(crate) struct InnerOutcome {
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub rate: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Best per-band profit `max_j h_j` at `(alpha, beta)`.
    pub nu: f64,
    /// Dual value `α + β·budget + ν`, an upper bound on the optimum.
    pub dual: f64,
    #[allow(dead_code)]
    pub relay: f64,
}

/// Solves the inner problem over `cols`; `cols[0]` must be the relay-silent
/// mode.
pub(crate) fn solve(cols: &[Column], budget: f64, rel_tol: f64) -> InnerOutcome {
    let n = cols.len();
    let finish = |lo: &Level, omega: f64, hi: &Level, beta: f64| {
        let mut tau = vec![0.0; n];
        let mut theta = vec![0.0; n];
        lo.accumulate(omega, &mut tau, &mut theta);
        hi.accumulate(1.0 - omega, &mut tau, &mut theta);
        let rate = (0..n).map(|j| mode_term(tau[j], theta[j], cols[j].s)).sum();
        let relay = (0..n).map(|j| cols[j].c * tau[j] + cols[j].d * theta[j]).sum();
        InnerOutcome {
            tau,
            theta,
            rate,
            alpha: hi.alpha,
            beta,
            nu: hi.nu,
            dual: hi.alpha + beta * budget + hi.nu,
            relay,
        }
    };

    let free = solve_alpha(cols, 0.0, rel_tol);
    if free.relay <= budget {
        return finish(&free, 0.0, &free, 0.0);
    }

    // Bracket the relay price: relay use is nonincreasing in beta.
    let scale = cols.iter().map(|c| c.s).fold(0.0, f64::max)
        / cols.iter().map(|c| c.c + c.d).fold(f64::MIN_POSITIVE, f64::max);
    let mut b_hi = scale.max(f64::MIN_POSITIVE);
    let mut hi = solve_alpha(cols, b_hi, rel_tol);
    let mut steps = 0;
    while hi.relay > budget && steps < MAX_BRACKET_STEPS {
        b_hi *= 2.0;
        hi = solve_alpha(cols, b_hi, rel_tol);
        steps += 1;
    }
    let mut b_lo = b_hi * 0.5;
    let mut lo = solve_alpha(cols, b_lo, rel_tol);
    steps = 0;
    while lo.relay <= budget && steps < MAX_BRACKET_STEPS {
        b_hi = b_lo;
        hi = lo;
        b_lo *= 0.5;
        lo = solve_alpha(cols, b_lo, rel_tol);
        steps += 1;
    }
    if lo.relay <= budget {
        // Prices this small act like zero.
        return finish(&lo, 0.0, &lo, b_lo);
    }
    for _ in 0..MAX_BISECTIONS {
        if b_hi / b_lo - 1.0 <= rel_tol {
            break;
        }
        let mid = (b_lo * b_hi).sqrt();
        let level = solve_alpha(cols, mid, rel_tol);
        if level.relay > budget {
            b_lo = mid;
            lo = level;
        } else {
            b_hi = mid;
            hi = level;
        }
    }
    let omega = ((budget - hi.relay) / (lo.relay - hi.relay)).clamp(0.0, 1.0);
    finish(&lo, omega, &hi, b_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cap(x: f64) -> f64 {
        0.5 * (1.0 + x).log2()
    }

    #[test]
    fn psi_matches_direct_maximization() {
        for &(s, price) in &[(1.0, 0.3), (5.0, 0.1), (0.2, 0.05), (3.0, 2.0)] {
            let x = power_ratio(s, price);
            assert_relative_eq!(psi(s, price), cap(s * x) - price * x, epsilon = 1e-14);
            for dx in [-1e-3, 1e-3] {
                let y = (x + dx).max(0.0);
                assert!(cap(s * y) - price * y <= psi(s, price) + 1e-15);
            }
        }
    }

    #[test]
    fn single_mode_is_flat_waterfilling() {
        let out = solve(&[Column::silent(3.0)], 1.0, 1e-14);
        assert_relative_eq!(out.rate, 1.0, epsilon = 1e-14);
        assert_eq!(out.tau, vec![1.0]);
        assert_relative_eq!(out.dual, out.rate, epsilon = 1e-12);
    }

    #[test]
    fn unaffordable_mode_is_unused() {
        let cols = [
            Column::silent(1.0),
            Column {
                s: 10.0,
                c: 50.0,
                d: 50.0,
            },
        ];
        let out = solve(&cols, 1.0, 1e-14);
        assert!(out.relay <= 1.0 + 1e-12);
        assert!(out.rate > 0.5);
        assert!(out.dual - out.rate < 1e-9, "gap {}", out.dual - out.rate);
    }

    #[test]
    fn binding_budget_mixes_modes() {
        // Relay mode doubles the SNR but its full use costs twice the budget.
        let cols = [
            Column::silent(1.0),
            Column {
                s: 2.0,
                c: 1.0,
                d: 1.0,
            },
        ];
        let out = solve(&cols, 1.0, 1e-14);
        assert_relative_eq!(out.relay, 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.tau.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.theta.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(out.rate > 0.5 && out.rate < cap(2.0));
        assert!(out.dual - out.rate < 1e-9);
    }
}
