//! Outer search over relay gains.
//!
//! For a pool of gains the inner problem gives optimal prices `(α, β)`. Any
//! gain whose profit `h(λ; α, β)` beats the pool's best profit `ν` would
//! raise the rate, and `α + β·budget + max_λ h` bounds the rate over all
//! gains. Each round therefore scans the gain box for profitable gains,
//! polishes them and the active gains by golden-section search, and adds them
//! to idle pool slots. Active gains stay in the pool, so the pool optimum
//! never decreases. Rounds stop when the bound and the pool optimum agree.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::inner::{self, profit, Column};
use crate::channel::{ChannelParams, aligned_phase, fd_mode_gain, lti_mode_gain};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Indices of the largest local maxima of a sampled function, best first.
fn local_maxima(values: &[f64], keep: usize) -> Vec<usize> {
    let n = values.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == n || values[i] >= values[i + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&i, &k| values[k].total_cmp(&values[i]).then(i.cmp(&k)));
    peaks.truncate(keep);
    peaks
}

/// Maximizes a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    let (fl, fh) = (f(lo), f(hi));
    [(x1, f1), (x2, f2), (lo, fl), (hi, fh)]
        .into_iter()
        .fold((x1, f1), |best, p| if p.1 > best.1 { p } else { best })
}

/// A continuous family of relay modes indexed by a gain.
pub(crate) trait GainFamily: Sync {
    type Gain: Copy + PartialEq + Send + Sync + std::fmt::Debug;

    fn column(&self, g: Self::Gain) -> Column;
    fn silent(&self) -> Column;
    fn random(&self, rng: &mut ChaCha8Rng) -> Self::Gain;
    /// Deterministic starting gains tried before random ones.
    fn anchors(&self) -> Vec<Self::Gain>;
    /// Profitable gains at the given prices, best first.
    fn scan(&self, alpha: f64, beta: f64, keep: usize) -> Vec<Self::Gain>;
    /// Nearby local maximizer of the profit.
    fn polish(&self, g: Self::Gain, alpha: f64, beta: f64) -> Self::Gain;
    fn distance(&self, x: Self::Gain, y: Self::Gain) -> f64;
    /// Total order used to make reductions deterministic.
    fn key(&self, g: Self::Gain) -> [f64; 2];
}

/// Real relay gains in `[-cap, cap]`.
pub(crate) struct RealGains {
    pub params: ChannelParams,
    pub cap: f64,
    pub grid: usize,
}

impl RealGains {
    fn profit(&self, lam: f64, alpha: f64, beta: f64) -> f64 {
        profit(&self.column(lam), alpha, beta)
    }
}

pub(crate) fn lti_column(params: &ChannelParams, lam: Complex64) -> Column {
    let l2 = lam.norm_sqr();
    Column {
        s: params.snr() * lti_mode_gain(params, lam),
        c: l2 * params.sigma2,
        d: l2 * params.a.norm_sqr() * params.power,
    }
}

impl GainFamily for RealGains {
    type Gain = f64;

    fn column(&self, g: f64) -> Column {
        lti_column(&self.params, g.into())
    }

    fn silent(&self) -> Column {
        Column::silent(self.params.snr())
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-self.cap..=self.cap)
    }

    fn anchors(&self) -> Vec<f64> {
        let iaf = crate::channel::iaf_gain(&self.params).re;
        let full = crate::channel::full_power_iaf_gain(&self.params).re;
        let scale = self.params.gain_scale();
        vec![iaf, 0.0, scale, -scale, full]
            .into_iter()
            .map(|g| g.clamp(-self.cap, self.cap))
            .collect()
    }

    fn scan(&self, alpha: f64, beta: f64, keep: usize) -> Vec<f64> {
        let step = 2.0 * self.cap / (self.grid - 1) as f64;
        let xs: Vec<f64> = (0..self.grid).map(|i| -self.cap + step * i as f64).collect();
        let hs: Vec<f64> = xs.iter().map(|&x| self.profit(x, alpha, beta)).collect();
        local_maxima(&hs, keep)
            .into_iter()
            .map(|i| {
                let lo = xs[i.saturating_sub(1)];
                let hi = xs[(i + 1).min(self.grid - 1)];
                golden_max(|x| self.profit(x, alpha, beta), lo, hi, 1e-13 * self.cap).0
            })
            .collect()
    }

    fn polish(&self, g: f64, alpha: f64, beta: f64) -> f64 {
        let step = 2.0 * self.cap / (self.grid - 1) as f64;
        let lo = (g - 2.0 * step).max(-self.cap);
        let hi = (g + 2.0 * step).min(self.cap);
        let (x, fx) = golden_max(|x| self.profit(x, alpha, beta), lo, hi, 1e-13 * self.cap);
        if fx >= self.profit(g, alpha, beta) {
            x
        } else {
            g
        }
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        (x - y).abs()
    }

    fn key(&self, g: f64) -> [f64; 2] {
        [g, 0.0]
    }
}

/// Complex relay gains `r·e^{iφ}` with `r ≤ cap`.
pub(crate) struct ComplexGains {
    pub params: ChannelParams,
    pub cap: f64,
    pub radii: usize,
    pub phases: usize,
}

impl ComplexGains {
    fn profit(&self, r: f64, phi: f64, alpha: f64, beta: f64) -> f64 {
        profit(&self.column(Complex64::from_polar(r, phi)), alpha, beta)
    }
}

impl GainFamily for ComplexGains {
    type Gain = Complex64;

    fn column(&self, g: Complex64) -> Column {
        lti_column(&self.params, g)
    }

    fn silent(&self) -> Column {
        Column::silent(self.params.snr())
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        let r = self.cap * rng.gen::<f64>().sqrt();
        Complex64::from_polar(r, rng.gen_range(-PI..PI))
    }

    fn anchors(&self) -> Vec<Complex64> {
        let scale = self.params.gain_scale().min(self.cap);
        let phase = aligned_phase(&self.params);
        vec![
            crate::channel::iaf_gain(&self.params),
            Complex64::new(0.0, 0.0),
            phase * scale,
            -phase * scale,
            crate::channel::full_power_iaf_gain(&self.params),
        ]
    }

    fn scan(&self, alpha: f64, beta: f64, keep: usize) -> Vec<Complex64> {
        let dr = self.cap / (self.radii - 1) as f64;
        let dphi = 2.0 * PI / self.phases as f64;
        let mut best: Vec<(f64, f64, f64)> = Vec::new();
        for ir in 1..self.radii {
            let r = dr * ir as f64;
            let hs: Vec<f64> = (0..self.phases)
                .map(|k| self.profit(r, -PI + dphi * k as f64, alpha, beta))
                .collect();
            // Best phase on each ring; rings then compete on profit.
            let k = (0..self.phases)
                .max_by(|&i, &j| hs[i].total_cmp(&hs[j]).then(j.cmp(&i)))
                .unwrap_or(0);
            best.push((hs[k], r, -PI + dphi * k as f64));
        }
        let ring_profits: Vec<f64> = best.iter().map(|b| b.0).collect();
        local_maxima(&ring_profits, keep)
            .into_iter()
            .map(|i| self.polish(Complex64::from_polar(best[i].1, best[i].2), alpha, beta))
            .collect()
    }

    fn polish(&self, g: Complex64, alpha: f64, beta: f64) -> Complex64 {
        let dr = self.cap / (self.radii - 1) as f64;
        let dphi = 2.0 * PI / self.phases as f64;
        let (mut r, mut phi) = (g.norm(), g.arg());
        let start = self.profit(r, phi, alpha, beta);
        let mut width_r = 2.0 * dr;
        let mut width_phi = 2.0 * dphi;
        for _ in 0..6 {
            let p = phi;
            phi = golden_max(
                |t| self.profit(r, t, alpha, beta),
                p - width_phi,
                p + width_phi,
                1e-12,
            )
            .0;
            let q = r;
            r = golden_max(
                |t| self.profit(t, phi, alpha, beta),
                (q - width_r).max(0.0),
                (q + width_r).min(self.cap),
                1e-13 * self.cap,
            )
            .0;
            width_r *= 0.5;
            width_phi *= 0.5;
        }
        if self.profit(r, phi, alpha, beta) >= start {
            Complex64::from_polar(r, wrap_phase(phi))
        } else {
            g
        }
    }

    fn distance(&self, x: Complex64, y: Complex64) -> f64 {
        (x - y).norm()
    }

    fn key(&self, g: Complex64) -> [f64; 2] {
        [g.re, g.im]
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Frequency-division relay power gains `η ∈ [0, cap]`.
pub(crate) struct FdGains {
    pub params: ChannelParams,
    pub cap: f64,
    pub grid: usize,
}

impl FdGains {
    fn profit(&self, eta: f64, alpha: f64, beta: f64) -> f64 {
        profit(&self.column(eta), alpha, beta)
    }
}

pub(crate) fn fd_column(params: &ChannelParams, eta: f64) -> Column {
    Column {
        s: params.snr() * fd_mode_gain(params, eta),
        c: eta * params.sigma2,
        d: eta * params.a.norm_sqr() * params.power,
    }
}

impl GainFamily for FdGains {
    type Gain = f64;

    fn column(&self, eta: f64) -> Column {
        fd_column(&self.params, eta)
    }

    fn silent(&self) -> Column {
        Column::silent(self.params.snr())
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> f64 {
        // Uniform in the square-root scale, where the profit varies evenly.
        let u: f64 = rng.gen();
        self.cap * u * u
    }

    fn anchors(&self) -> Vec<f64> {
        let p = &self.params;
        let full = p.relay_budget() / (p.a.norm_sqr() * p.power + p.sigma2);
        vec![full.min(self.cap), 0.0, (0.25 * full).min(self.cap)]
    }

    fn scan(&self, alpha: f64, beta: f64, keep: usize) -> Vec<f64> {
        let root = self.cap.sqrt();
        let step = root / (self.grid - 1) as f64;
        let us: Vec<f64> = (0..self.grid).map(|i| step * i as f64).collect();
        let hs: Vec<f64> = us.iter().map(|&u| self.profit(u * u, alpha, beta)).collect();
        local_maxima(&hs, keep)
            .into_iter()
            .map(|i| {
                let lo = us[i.saturating_sub(1)];
                let hi = us[(i + 1).min(self.grid - 1)];
                let u = golden_max(|u| self.profit(u * u, alpha, beta), lo, hi, 1e-13 * root).0;
                u * u
            })
            .collect()
    }

    fn polish(&self, g: f64, alpha: f64, beta: f64) -> f64 {
        let root = self.cap.sqrt();
        let step = root / (self.grid - 1) as f64;
        let u0 = g.sqrt();
        let (u, fu) = golden_max(
            |u| self.profit(u * u, alpha, beta),
            (u0 - 2.0 * step).max(0.0),
            (u0 + 2.0 * step).min(root),
            1e-13 * root,
        );
        if fu >= self.profit(g, alpha, beta) {
            u * u
        } else {
            g
        }
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        (x - y).abs()
    }

    fn key(&self, g: f64) -> [f64; 2] {
        [g, 0.0]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SearchSettings {
    pub slots: usize,
    pub budget: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_rounds: usize,
}

/// Result of one start of the exchange search.
#[derive(Clone, Debug)]
pub(crate) struct StartOutcome<G> {
    pub gains: Vec<G>,
    pub inner: inner::InnerOutcome,
    /// `α + β·budget + max_λ h`, the scan's bound on the rate over all gains.
    pub bound: f64,
    pub rounds: usize,
}

pub(crate) fn run_start<F: GainFamily>(
    family: &F,
    mut gains: Vec<F::Gain>,
    settings: &SearchSettings,
) -> StartOutcome<F::Gain> {
    let columns = |gains: &[F::Gain]| {
        let mut cols = Vec::with_capacity(gains.len() + 1);
        cols.push(family.silent());
        cols.extend(gains.iter().map(|&g| family.column(g)));
        cols
    };
    let mut out = inner::solve(&columns(&gains), settings.budget, settings.inner_tol);
    let mut bound = f64::INFINITY;
    let mut rounds = 0;
    while rounds < settings.max_rounds {
        rounds += 1;
        let (alpha, beta) = (out.alpha, out.beta);
        let active: Vec<usize> = (0..gains.len()).filter(|&j| out.tau[j + 1] > 0.0).collect();
        let mut candidates: Vec<F::Gain> = family.scan(alpha, beta, 3);
        candidates.extend(active.iter().map(|&j| family.polish(gains[j], alpha, beta)));
        let mut scored: Vec<(f64, F::Gain)> = candidates
            .into_iter()
            .map(|g| (profit(&family.column(g), alpha, beta), g))
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0));
        let best = scored.first().map_or(f64::NEG_INFINITY, |c| c.0).max(out.nu);
        bound = alpha + beta * settings.budget + best;
        if bound - out.rate <= settings.outer_tol {
            break;
        }

        let mut idle: Vec<usize> = (0..gains.len()).filter(|j| !active.contains(j)).collect();
        let mut changed = false;
        for (h, g) in scored {
            if h <= out.nu {
                break;
            }
            if gains.iter().any(|&p| family.distance(p, g) <= 1e-12) {
                continue;
            }
            if let Some(slot) = idle.pop() {
                gains[slot] = g;
                changed = true;
            } else if gains.len() < settings.slots {
                gains.push(g);
                changed = true;
            } else {
                break;
            }
        }
        if !changed {
            break;
        }
        let next = inner::solve(&columns(&gains), settings.budget, settings.inner_tol);
        if next.rate < out.rate - 1e-12 {
            break;
        }
        out = next;
    }
    StartOutcome {
        gains,
        inner: out,
        bound,
        rounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(fx > -1e-11);
    }

    #[test]
    fn local_maxima_ranked() {
        let v = [0.0, 1.0, 0.0, 3.0, 2.0, 2.5];
        assert_eq!(local_maxima(&v, 3), vec![3, 5, 1]);
    }

    #[test]
    fn phase_wrapping() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
    }
}
