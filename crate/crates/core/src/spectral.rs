//! Spectra, relay filters and the two rate evaluators built on them: the
//! exact block mutual information of the finite Toeplitz model and its
//! spectral-integral limit.
//!
//! Frequency responses use `H(ω) = Σ_j h_j e^{−ijω}`; power spectra are
//! normalized so that the grid mean is the power.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{cap_bits, ChannelParams};
use crate::error::{Error, Result};

/// Uniform samples on `ω_k = 2πk/m`, `k = 0..m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid<T> {
    values: Vec<T>,
}

pub type PowerSpectrum = SpectrumGrid<f64>;
pub type FrequencyResponse = SpectrumGrid<Complex64>;

pub fn omega(k: usize, m: usize) -> f64 {
    2.0 * PI * k as f64 / m as f64
}

impl<T: Copy> SpectrumGrid<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("empty spectrum grid".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(m: usize, value: T) -> Self {
        Self {
            values: vec![value; m.max(1)],
        }
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> T) -> Self {
        Self {
            values: (0..m.max(1)).map(|k| f(omega(k, m.max(1)))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn mirror(&self, k: usize) -> T {
        let m = self.values.len();
        self.values[(m - k) % m]
    }
}

impl PowerSpectrum {
    pub fn validate(&self) -> Result<()> {
        match self.values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            Some(k) => Err(Error::Domain(format!(
                "power spectrum sample {k} is {} (must be finite and nonnegative)",
                self.values[k]
            ))),
            None => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `f(ω) = f(2π − ω)` on the grid.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.len()).all(|k| (self.values[k] - self.mirror(k)).abs() <= tol)
    }
}

impl FrequencyResponse {
    /// `H(ω) = conj(H(2π − ω))` on the grid, as for real impulse responses.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        (0..self.len()).all(|k| (self.values[k] - self.mirror(k).conj()).norm() <= tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `P(1 + ½cos ω)`: a smooth, strictly positive spectrum of mean `P` whose
/// autocovariance has only three nonzero lags.
pub fn smooth_test_spectrum(m: usize, power: f64) -> PowerSpectrum {
    PowerSpectrum::from_fn(m, |w| power * (1.0 + 0.5 * w.cos()))
}

/// Two-sided impulse response `h_{−L} … h_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterTaps {
    taps: Vec<Complex64>,
    half_len: usize,
}

impl FilterTaps {
    /// `taps[j + L]` holds `h_j`.
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::Degenerate(format!(
                "a two-sided filter needs an odd number of taps, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::Domain("non-finite filter tap".into()));
        }
        let half_len = taps.len() / 2;
        Ok(Self { taps, half_len })
    }

    pub fn from_real(taps: &[f64]) -> Result<Self> {
        Self::new(taps.iter().map(|&t| t.into()).collect())
    }

    /// The one-tap filter `h_0 = lam`.
    pub fn one_tap(lam: Complex64) -> Self {
        Self {
            taps: vec![lam],
            half_len: 0,
        }
    }

    pub fn half_len(&self) -> usize {
        self.half_len
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// `h_j`, zero outside `[−L, L]`.
    pub fn tap(&self, j: isize) -> Complex64 {
        let l = self.half_len as isize;
        if j.abs() > l {
            Complex64::new(0.0, 0.0)
        } else {
            self.taps[(j + l) as usize]
        }
    }

    pub fn response_at(&self, w: f64) -> Complex64 {
        let l = self.half_len as isize;
        (-l..=l)
            .map(|j| self.tap(j) * Complex64::from_polar(1.0, -(j as f64) * w))
            .sum()
    }

    /// Samples the response on an `m`-point grid by FFT.
    pub fn response(&self, m: usize) -> FrequencyResponse {
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let l = self.half_len as isize;
        for j in -l..=l {
            buf[j.rem_euclid(m as isize) as usize] += self.tap(j);
        }
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        SpectrumGrid { values: buf }
    }

    /// `Σ|h_j|`.
    pub fn stability_margin(&self) -> f64 {
        self.taps.iter().map(|t| t.norm()).sum()
    }

    /// `Σ_{|j|>L/2} |h_j|`.
    pub fn tail_mass(&self) -> f64 {
        let l = self.half_len as isize;
        (-l..=l)
            .filter(|j| 2 * j.abs() > l)
            .map(|j| self.tap(j).norm())
            .sum()
    }

    /// `Σ|h_j|²`.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// `h_{−j} = conj(h_j)`.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let l = self.half_len as isize;
        (0..=l).all(|j| (self.tap(-j) - self.tap(j).conj()).norm() <= tol)
    }

    /// `h_{−j} = h_j`.
    pub fn is_even(&self, tol: f64) -> bool {
        let l = self.half_len as isize;
        (0..=l).all(|j| (self.tap(-j) - self.tap(j)).norm() <= tol)
    }
}

fn check_sizes(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::GridMismatch { left, right })
    }
}

/// Destination spectrum after noise whitening,
/// `f^d = 1 + |1+abH|² f^s / (σ²(1+|b|²|H|²))`.
pub fn spectrum_fd(
    f_s: &PowerSpectrum,
    h: &FrequencyResponse,
    params: &ChannelParams,
) -> Result<PowerSpectrum> {
    check_sizes(f_s.len(), h.len())?;
    f_s.validate()?;
    let ab = params.a * params.b;
    let b2 = params.b.norm_sqr();
    let values = f_s
        .values
        .iter()
        .zip(&h.values)
        .map(|(&fs, &hw)| {
            let gain = (Complex64::new(1.0, 0.0) + ab * hw).norm_sqr();
            1.0 + gain * fs / (params.sigma2 * (1.0 + b2 * hw.norm_sqr()))
        })
        .collect();
    Ok(SpectrumGrid { values })
}

/// Relay transmit spectrum `f^r = (|a|² f^s + σ²)|H|²`.
pub fn spectrum_fr(
    f_s: &PowerSpectrum,
    h: &FrequencyResponse,
    params: &ChannelParams,
) -> Result<PowerSpectrum> {
    check_sizes(f_s.len(), h.len())?;
    f_s.validate()?;
    let a2 = params.a.norm_sqr();
    let values = f_s
        .values
        .iter()
        .zip(&h.values)
        .map(|(&fs, &hw)| (a2 * fs + params.sigma2) * hw.norm_sqr())
        .collect();
    Ok(SpectrumGrid { values })
}

/// `(1/4π)∫ log₂ f^d(ω) dω` by the periodic trapezoidal rule.
pub fn spectral_rate(f_s: &PowerSpectrum, h: &FrequencyResponse, params: &ChannelParams) -> Result<f64> {
    let fd = spectrum_fd(f_s, h, params)?;
    Ok(fd.values.iter().map(|&v| 0.5 * v.log2()).sum::<f64>() / fd.len() as f64)
}

/// Autocovariances `r_0 … r_{n−1}` of a spectrum, with
/// `r_k = mean_ω f(ω) e^{ikω}`. The spectrum is floored at zero first.
pub fn autocovariances(f_s: &PowerSpectrum, n: usize) -> Result<Vec<Complex64>> {
    let m = f_s.len();
    if m < 2 * n {
        return Err(Error::Degenerate(format!(
            "a {m}-point grid aliases the autocovariances of a block of {n}; use at least {}",
            2 * n
        )));
    }
    let mut buf: Vec<Complex64> = f_s
        .values
        .iter()
        .map(|&v| Complex64::new(v.max(0.0), 0.0))
        .collect();
    let mean = f_s.values.iter().map(|v| v.max(0.0)).sum::<f64>() / m as f64;
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    let mut r: Vec<Complex64> = buf[..n].iter().map(|v| v / m as f64).collect();
    if let Some(r0) = r.first_mut() {
        *r0 = Complex64::new(mean, 0.0);
    }
    Ok(r)
}

/// Dense square complex matrix, row-major.
struct Matrix {
    n: usize,
    data: Vec<Complex64>,
}

impl Matrix {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }

    fn toeplitz(r: &[Complex64]) -> Self {
        let n = r.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                *m.at_mut(i, j) = if i >= j { r[i - j] } else { r[j - i].conj() };
            }
        }
        m
    }

    /// `log det` of a Hermitian positive definite matrix by Cholesky.
    fn log_det_hpd(mut self) -> Result<f64> {
        let n = self.n;
        let mut log_det = 0.0;
        for j in 0..n {
            let mut d = self.at(j, j).re;
            for k in 0..j {
                d -= self.at(j, k).norm_sqr();
            }
            if !(d > 0.0) {
                return Err(Error::IndefiniteCovariance { pivot: j, value: d });
            }
            let root = d.sqrt();
            log_det += 2.0 * root.ln();
            *self.at_mut(j, j) = Complex64::new(root, 0.0);
            let (head, tail) = self.data.split_at_mut((j + 1) * n);
            let row_j = &head[j * n..j * n + j];
            for i in (j + 1)..n {
                let row_i = &mut tail[(i - j - 1) * n..(i - j) * n];
                let mut s = row_i[j];
                for k in 0..j {
                    s -= row_i[k] * row_j[k].conj();
                }
                row_i[j] = s / root;
            }
        }
        Ok(log_det)
    }
}

/// Banded Toeplitz filter matrix `H_{ij} = h_{i−j}`, applied implicitly.
struct Banded<'a> {
    taps: &'a FilterTaps,
    scale: Complex64,
    identity: bool,
}

impl Banded<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        let mut v = self.scale * self.taps.tap(i as isize - j as isize);
        if self.identity && i == j {
            v += 1.0;
        }
        v
    }

    fn band(&self, i: usize, n: usize) -> std::ops::Range<usize> {
        let l = self.taps.half_len();
        i.saturating_sub(l)..(i + l + 1).min(n)
    }

    /// `G M G^H`.
    fn sandwich(&self, m: &Matrix) -> Matrix {
        let n = m.n;
        let mut left = Matrix::zeros(n);
        for i in 0..n {
            for j in self.band(i, n) {
                let g = self.at(i, j);
                for k in 0..n {
                    left.data[i * n + k] += g * m.data[j * n + k];
                }
            }
        }
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for j in self.band(k, n) {
                    s += left.at(i, j) * self.at(k, j).conj();
                }
                *out.at_mut(i, k) = s;
            }
        }
        out
    }

    /// `G G^H`.
    fn gram(&self, n: usize) -> Matrix {
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                if i.abs_diff(k) > 2 * self.taps.half_len() {
                    continue;
                }
                let mut s = Complex64::new(0.0, 0.0);
                for j in self.band(i, n) {
                    if k.abs_diff(j) <= self.taps.half_len() {
                        s += self.at(i, j) * self.at(k, j).conj();
                    }
                }
                *out.at_mut(i, k) = s;
            }
        }
        out
    }
}

fn check_block(f_s: &PowerSpectrum, n: usize) -> Result<()> {
    f_s.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "block size must be positive",
        });
    }
    Ok(())
}

/// Block mutual information `(1/2n) log₂ |M_num| / |M_den|` of the `n`-sample
/// Toeplitz model, with `M_den = σ²(I + |b|²HH^H)` and
/// `M_num = (I+abH) Σ (I+abH)^H + M_den`.
pub fn toeplitz_mi(f_s: &PowerSpectrum, taps: &FilterTaps, params: &ChannelParams, n: usize) -> Result<f64> {
    check_block(f_s, n)?;
    let sigma = Matrix::toeplitz(&autocovariances(f_s, n)?);
    let direct = Banded {
        taps,
        scale: params.a * params.b,
        identity: true,
    };
    let relay = Banded {
        taps,
        scale: params.b,
        identity: false,
    };
    let mut den = relay.gram(n);
    for v in &mut den.data {
        *v *= params.sigma2;
    }
    for i in 0..n {
        *den.at_mut(i, i) += params.sigma2;
    }
    let mut num = direct.sandwich(&sigma);
    for (x, d) in num.data.iter_mut().zip(&den.data) {
        *x += d;
    }
    let log_ratio = num.log_det_hpd()? - den.log_det_hpd()?;
    Ok((log_ratio / (2.0 * n as f64 * LN_2)).max(0.0))
}

/// `|toeplitz_mi(n) − spectral_rate|` on the grid of `f_s`.
pub fn convergence_gap(f_s: &PowerSpectrum, taps: &FilterTaps, params: &ChannelParams, n: usize) -> Result<f64> {
    let block = toeplitz_mi(f_s, taps, params, n)?;
    let limit = spectral_rate(f_s, &taps.response(f_s.len()), params)?;
    Ok((block - limit).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerGaps {
    /// `|tr(Σ)/n − mean f^s|`.
    pub source_gap: f64,
    /// `|tr(H(|a|²Σ+σ²I)H^H)/n − mean f^r|`.
    pub relay_gap: f64,
}

/// Differences between block-average and spectral source and relay powers.
pub fn power_checks(f_s: &PowerSpectrum, taps: &FilterTaps, params: &ChannelParams, n: usize) -> Result<PowerGaps> {
    check_block(f_s, n)?;
    let r = autocovariances(f_s, n)?;
    // Received covariance is Toeplitz, so each diagonal of H M H^H sums in closed form.
    let a2 = params.a.norm_sqr();
    let cov = |d: isize| {
        let rd = if d >= 0 { r[d as usize] } else { r[(-d) as usize].conj() };
        rd * a2 + if d == 0 { params.sigma2 } else { 0.0 }
    };
    let half = taps.half_len() as isize;
    let ni = n as isize;
    let mut relay_block = Complex64::new(0.0, 0.0);
    for j in -half..=half {
        for l in -half..=half {
            if (j - l).abs() >= ni {
                continue;
            }
            let lo = 0.max(j.max(l));
            let hi = (ni - 1).min(ni - 1 + j.min(l));
            if hi < lo {
                continue;
            }
            let count = (hi - lo + 1) as f64 / n as f64;
            relay_block += taps.tap(j) * taps.tap(l).conj() * cov(l - j) * count;
        }
    }
    let relay_block = relay_block.re;
    let floored = PowerSpectrum {
        values: f_s.values.iter().map(|v| v.max(0.0)).collect(),
    };
    let relay_spectral = spectrum_fr(&floored, &taps.response(f_s.len()), params)?.mean();
    Ok(PowerGaps {
        source_gap: (r[0].re - floored.mean()).abs(),
        relay_gap: (relay_block - relay_spectral).abs(),
    })
}

/// Flat-spectrum closed form of [`spectral_rate`] for a one-tap filter.
pub fn flat_rate(params: &ChannelParams, lam: Complex64) -> f64 {
    cap_bits(crate::channel::effective_snr_lti(params, lam))
}
