//! Closed forms and brute-force searches written from scratch, used as
//! independent references for the library.

#![allow(dead_code)]

use num_complex::Complex64;

pub fn cap(x: f64) -> f64 {
    0.5 * (1.0 + x).log2()
}

pub fn direct(sigma2: f64, p: f64) -> f64 {
    cap(p / sigma2)
}

fn lti_snr(a: f64, b: f64, sigma2: f64, p: f64, lam: f64) -> f64 {
    p / sigma2 * (1.0 + a * b * lam).powi(2) / (1.0 + b * b * lam * lam)
}

/// Amplify-and-forward with gain `min(full power, a/b)` and sign of `ab`.
pub fn iaf(a: f64, b: f64, sigma2: f64, p: f64, gamma: f64) -> f64 {
    let full = (gamma * p / (a * a * p + sigma2)).sqrt();
    let mag = if b == 0.0 { full } else { full.min(a.abs() / b.abs()) };
    let lam = if a * b < 0.0 { -mag } else { mag };
    cap(lti_snr(a, b, sigma2, p, lam))
}

/// Broadcast and multiple-access cuts with relay look-ahead.
pub fn cutset(a: f64, b: f64, sigma2: f64, p: f64, gamma: f64) -> f64 {
    let broadcast = cap((1.0 + a * a) * p / sigma2);
    let mac = cap((1.0 + b.abs() * gamma.sqrt()).powi(2) * p / sigma2);
    broadcast.min(mac)
}

/// `P hᴴ N⁻¹ h` for the two observations of frequency-division relaying:
/// the direct `x + z` and the forwarded `b√η(a x + z_r) + z_d`.
pub fn matched_filter_snr(a: Complex64, b: Complex64, eta: f64, p: f64, sigma2: f64) -> f64 {
    let h = [Complex64::new(1.0, 0.0), b * eta.sqrt() * a];
    let noise = [sigma2, sigma2 * (1.0 + b.norm_sqr() * eta)];
    p * h.iter().zip(noise).map(|(h, n)| h.norm_sqr() / n).sum::<f64>()
}

/// Best rate with one silent band and one relay band, real positive `a, b`,
/// by grid search over band and power fractions and local refinement. The
/// relay gain of the second band is the smaller of the affordable gain and
/// the unconstrained peak `a/b`.
pub fn two_mode_search(a: f64, b: f64, sigma2: f64, p: f64, gamma: f64) -> f64 {
    let rate = |t: f64, th: f64| -> f64 {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&th) {
            return f64::NEG_INFINITY;
        }
        let term = |tau: f64, theta: f64, s: f64| if tau > 0.0 { tau * cap(theta * s / tau) } else { 0.0 };
        let lam = if t > 0.0 {
            (gamma * p / (sigma2 * t + a * a * p * th)).sqrt().min(a / b)
        } else {
            0.0
        };
        term(1.0 - t, 1.0 - th, p / sigma2) + term(t, th, lti_snr(a, b, sigma2, 1.0, lam) * p)
    };
    let n = 400;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..=n {
        for k in 0..=n {
            let (t, th) = (i as f64 / n as f64, k as f64 / n as f64);
            let r = rate(t, th);
            if r > best.2 {
                best = (t, th, r);
            }
        }
    }
    let mut step = 1.0 / n as f64;
    while step > 1e-13 {
        let mut moved = false;
        for (dt, dth) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let (t, th) = (best.0 + dt * step, best.1 + dth * step);
            let r = rate(t, th);
            if r > best.2 {
                best = (t, th, r);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best.2
}
