//! Band-pass filter banks that realize a mode allocation.
//!
//! Each active mode occupies one interval of `[0, π)` whose width is its band
//! fraction times `π`; the response is mirrored evenly onto `[π, 2π)`.
//! Neighboring bands are joined by raised-cosine transitions of half-width
//! `δ`, which carry no source power. The source PSD of each band is raised
//! so that the flat part alone still carries the band's share of the power.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{cap_bits, ChannelParams, ModeAllocation};
use crate::error::{Error, Result};
use crate::spectral::{spectral_rate, spectrum_fr, FilterTaps, FrequencyResponse, PowerSpectrum, SpectrumGrid};

/// Relative relay-power slack tolerated by [`achieved_rate`].
pub const RELAY_SLACK: f64 = 1e-3;

pub const TAP_SCHEMA_VERSION: u32 = 1;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, 8 points.
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Index of the mode in the source allocation.
    pub mode: usize,
    /// Nominal edges in `[0, π]`.
    pub lo: f64,
    pub hi: f64,
    pub gain: Complex64,
    /// Source PSD on the flat part of the band.
    pub psd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub bands: Vec<Band>,
    /// Transition half-width in radians.
    pub delta: f64,
}

impl BandPlan {
    fn left_edge(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.delta
        }
    }

    fn right_edge(&self, k: usize) -> f64 {
        if k + 1 == self.bands.len() {
            0.0
        } else {
            self.delta
        }
    }

    /// Flat part of band `k`.
    pub fn flat(&self, k: usize) -> (f64, f64) {
        let b = &self.bands[k];
        (b.lo + self.left_edge(k), b.hi - self.right_edge(k))
    }

    fn fold(w: f64) -> f64 {
        let w = w.rem_euclid(2.0 * PI);
        if w > PI {
            2.0 * PI - w
        } else {
            w
        }
    }

    /// Index of the band whose nominal interval contains the folded `w`.
    fn locate(&self, w: f64) -> usize {
        self.bands
            .iter()
            .position(|b| w < b.hi)
            .unwrap_or(self.bands.len() - 1)
    }

    /// Raised-cosine weight of the right neighbor at distance `x` past the
    /// boundary, `x ∈ [−δ, δ]`.
    fn blend(&self, x: f64) -> f64 {
        0.5 * (1.0 - (PI * (x + self.delta) / (2.0 * self.delta)).cos())
    }

    pub fn response_at(&self, w: f64) -> Complex64 {
        let w = Self::fold(w);
        let k = self.locate(w);
        let b = &self.bands[k];
        if self.delta > 0.0 {
            if k > 0 && w < b.lo + self.delta {
                let s = self.blend(w - b.lo);
                return self.bands[k - 1].gain * (1.0 - s) + b.gain * s;
            }
            if k + 1 < self.bands.len() && w >= b.hi - self.delta {
                let s = self.blend(w - b.hi);
                return b.gain * (1.0 - s) + self.bands[k + 1].gain * s;
            }
        }
        b.gain
    }

    pub fn psd_at(&self, w: f64) -> f64 {
        let w = Self::fold(w);
        let k = self.locate(w);
        let (lo, hi) = self.flat(k);
        let last = k + 1 == self.bands.len();
        if w >= lo && (w < hi || (last && w <= hi)) {
            self.bands[k].psd
        } else {
            0.0
        }
    }

    /// Source PSD sampled on an `m`-point grid.
    pub fn source_spectrum(&self, m: usize) -> PowerSpectrum {
        SpectrumGrid::from_fn(m, |w| self.psd_at(w))
    }

    /// Gains on either side of each internal boundary.
    fn boundaries(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.bands.windows(2).map(|p| (p[0].gain, p[1].gain))
    }

    /// Mean relay transmit power, integrated piece by piece.
    pub fn relay_power(&self, params: &ChannelParams) -> f64 {
        let a2 = params.a.norm_sqr();
        let flat: f64 = (0..self.bands.len())
            .map(|k| {
                let (lo, hi) = self.flat(k);
                let b = &self.bands[k];
                (hi - lo) * (a2 * b.psd + params.sigma2) * b.gain.norm_sqr()
            })
            .sum();
        let mut edges = 0.0;
        if self.delta > 0.0 {
            for (gl, gr) in self.boundaries() {
                let mut acc = 0.0;
                for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    for sign in [-1.0, 1.0] {
                        let s = self.blend(sign * x * self.delta);
                        acc += wt * (gl * (1.0 - s) + gr * s).norm_sqr();
                    }
                }
                edges += params.sigma2 * acc * self.delta;
            }
        }
        (flat + edges) / PI
    }
}

/// Lays the active modes of `alloc` side by side on `[0, π)` in mode order.
pub fn plan_bands(alloc: &ModeAllocation, params: &ChannelParams, delta: f64) -> Result<BandPlan> {
    params.validate()?;
    alloc.validate(params, usize::MAX)?;
    let active: Vec<usize> = (0..alloc.tau.len()).filter(|&j| alloc.tau[j] > 0.0).collect();
    let narrowest = active
        .iter()
        .map(|&j| PI * alloc.tau[j])
        .fold(f64::INFINITY, f64::min);
    if !(delta >= 0.0) || (active.len() > 1 && delta >= narrowest / 4.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "transition half-width must be nonnegative and below a quarter of the narrowest band",
        });
    }
    let delta = if active.len() > 1 { delta } else { 0.0 };
    let mut lo = 0.0;
    let mut bands = Vec::with_capacity(active.len());
    for (pos, &j) in active.iter().enumerate() {
        let hi = if pos + 1 == active.len() {
            PI
        } else {
            lo + PI * alloc.tau[j]
        };
        bands.push(Band {
            mode: j,
            lo,
            hi,
            gain: if j == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                alloc.lambda[j - 1]
            },
            psd: 0.0,
        });
        lo = hi;
    }
    let mut plan = BandPlan { bands, delta };
    for k in 0..plan.bands.len() {
        let (flo, fhi) = plan.flat(k);
        plan.bands[k].psd = PI * alloc.theta[plan.bands[k].mode] * params.power / (fhi - flo);
    }
    Ok(plan)
}

/// Samples the bank response on an `m`-point grid.
pub fn bank_response(plan: &BandPlan, m: usize) -> Result<FrequencyResponse> {
    let need = 16 * plan.bands.len();
    if m < need {
        return Err(Error::InvalidParameter {
            name: "m",
            value: m as f64,
            reason: "grid must have at least 16 points per band",
        });
    }
    Ok(SpectrumGrid::from_fn(m, |w| plan.response_at(w)))
}

/// Grid used by [`synthesize_taps`] for half-length `half_len`.
pub fn synthesis_grid(plan: &BandPlan, half_len: usize) -> usize {
    (8 * half_len).max(16 * plan.bands.len()).max(1024).next_power_of_two()
}

/// Truncated impulse response of the bank, `h_j` for `|j| ≤ L`.
pub fn synthesize_taps(plan: &BandPlan, half_len: usize) -> Result<FilterTaps> {
    if half_len == 0 {
        return Err(Error::InvalidParameter {
            name: "L",
            value: 0.0,
            reason: "half-length must be at least 1",
        });
    }
    let m = synthesis_grid(plan, half_len);
    let mut buf = bank_response(plan, m)?.values().to_vec();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    let l = half_len as isize;
    let raw = |j: isize| buf[j.rem_euclid(m as isize) as usize] / m as f64;
    let taps = (-l..=l).map(|j| (raw(j) + raw(-j)) * 0.5).collect();
    FilterTaps::new(taps)
}

/// Rate of the bank with its piecewise source spectrum, integrated exactly.
/// Transitions carry no source power and contribute nothing.
pub fn achieved_rate(plan: &BandPlan, params: &ChannelParams) -> Result<f64> {
    params.validate()?;
    let budget = params.relay_budget();
    let relay = plan.relay_power(params);
    if relay > budget * (1.0 + RELAY_SLACK) + params.power_tol() {
        return Err(Error::ConstraintViolation {
            constraint: "relay power",
            violation: relay - budget,
        });
    }
    let ab = params.a * params.b;
    let b2 = params.b.norm_sqr();
    let rate = (0..plan.bands.len())
        .map(|k| {
            let (lo, hi) = plan.flat(k);
            let b = &plan.bands[k];
            let g = (Complex64::new(1.0, 0.0) + ab * b.gain).norm_sqr();
            let snr = g * b.psd / (params.sigma2 * (1.0 + b2 * b.gain.norm_sqr()));
            (hi - lo) / PI * cap_bits(snr)
        })
        .sum();
    Ok(rate)
}

/// Rate and relay power of truncated taps driven by the plan's source
/// spectrum, by quadrature on an `m`-point grid.
pub fn taps_rate(plan: &BandPlan, taps: &FilterTaps, params: &ChannelParams, m: usize) -> Result<(f64, f64)> {
    let fs = plan.source_spectrum(m);
    let h = taps.response(m);
    Ok((spectral_rate(&fs, &h, params)?, spectrum_fr(&fs, &h, params)?.mean()))
}

/// Writes one `index real imag` line per tap.
pub fn write_taps_text(taps: &FilterTaps, mut out: impl Write) -> Result<()> {
    let l = taps.half_len() as isize;
    for j in -l..=l {
        let h = taps.tap(j);
        writeln!(out, "{j} {} {}", h.re, h.im)?;
    }
    Ok(())
}

pub fn read_taps_text(input: impl BufRead) -> Result<FilterTaps> {
    let mut rows = Vec::new();
    for (line_no, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Degenerate(format!("malformed tap line {}: {line:?}", line_no + 1));
        let mut it = line.split_whitespace();
        let j: isize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let re: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let im: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        rows.push((j, Complex64::new(re, im)));
    }
    let l = rows.len() as isize / 2;
    if rows.iter().enumerate().any(|(k, &(j, _))| j != k as isize - l) {
        return Err(Error::Degenerate("tap indices must run from -L to L in order".into()));
    }
    FilterTaps::new(rows.into_iter().map(|(_, h)| h).collect())
}

/// JSON tap file with the plan it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapFile {
    pub schema_version: u32,
    pub delta: f64,
    pub half_len: usize,
    pub plan: BandPlan,
    pub taps: FilterTaps,
}

impl TapFile {
    pub fn new(plan: BandPlan, taps: FilterTaps) -> Self {
        Self {
            schema_version: TAP_SCHEMA_VERSION,
            delta: plan.delta,
            half_len: taps.half_len(),
            plan,
            taps,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(s)?;
        if file.schema_version != TAP_SCHEMA_VERSION {
            return Err(Error::Degenerate(format!(
                "unsupported tap file schema {}",
                file.schema_version
            )));
        }
        if file.half_len != file.taps.half_len() {
            return Err(Error::Degenerate("tap count disagrees with half_len".into()));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{allocation_rate, direct_rate, iaf_allocation, iaf_rate};
    use crate::spectral::omega;
    use approx::assert_relative_eq;

    fn fig2a() -> ChannelParams {
        ChannelParams::real(1.0, 2.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn two_band(lam: f64) -> ModeAllocation {
        ModeAllocation {
            tau: vec![0.5, 0.5],
            theta: vec![0.5, 0.5],
            lambda: vec![lam.into()],
        }
    }

    #[test]
    fn single_silent_band() {
        let p = fig2a();
        let plan = plan_bands(&ModeAllocation::mode_zero(), &p, 0.0).unwrap();
        assert_eq!(plan.bands.len(), 1);
        assert_eq!((plan.bands[0].lo, plan.bands[0].hi), (0.0, PI));
        assert_eq!(plan.bands[0].psd, 1.0);
        let h = bank_response(&plan, 64).unwrap();
        assert!(h.values().iter().all(|v| v.norm() == 0.0));
        let taps = synthesize_taps(&plan, 8).unwrap();
        assert!(taps.taps().iter().all(|v| v.norm() == 0.0));
        assert_relative_eq!(achieved_rate(&plan, &p).unwrap(), direct_rate(&p), epsilon = 1e-15);
    }

    #[test]
    fn two_bands_split_the_half_circle() {
        let p = fig2a();
        let plan = plan_bands(&two_band(0.3), &p, 0.0).unwrap();
        assert_relative_eq!(plan.bands[0].hi, PI / 2.0);
        assert_eq!(plan.bands[1].gain, Complex64::new(0.3, 0.0));
        let h = bank_response(&plan, 64).unwrap();
        for (k, v) in h.values().iter().enumerate() {
            let w = BandPlan::fold(omega(k, 64));
            let want = if w < PI / 2.0 { 0.0 } else { 0.3 };
            assert_eq!(v.re, want, "bin {k}");
        }
        assert!(h.is_conjugate_symmetric(1e-15));
    }

    #[test]
    fn transitions_only_near_edges() {
        let plan = plan_bands(&two_band(0.3), &fig2a(), 0.05).unwrap();
        assert_eq!(plan.response_at(PI / 2.0 - 0.051).re, 0.0);
        assert_eq!(plan.response_at(PI / 2.0 + 0.051).re, 0.3);
        assert_relative_eq!(plan.response_at(PI / 2.0).re, 0.15, epsilon = 1e-15);
        assert_eq!(plan.response_at(0.0).re, 0.0);
        assert_eq!(plan.response_at(PI - 1e-9).re, 0.3);
    }

    #[test]
    fn wide_transition_is_rejected() {
        assert!(plan_bands(&two_band(0.3), &fig2a(), PI / 8.0).is_err());
        assert!(plan_bands(&two_band(0.3), &fig2a(), -0.1).is_err());
        assert!(plan_bands(&ModeAllocation::mode_zero(), &fig2a(), 1.0).is_ok());
    }

    #[test]
    fn round_trip_without_transitions() {
        let p = ChannelParams::real(2.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let alloc = ModeAllocation {
            tau: vec![0.397, 0.603],
            theta: vec![0.0, 1.0],
            lambda: vec![0.31574.into()],
        };
        let plan = plan_bands(&alloc, &p, 0.0).unwrap();
        assert_relative_eq!(
            achieved_rate(&plan, &p).unwrap(),
            allocation_rate(&p, &alloc).unwrap(),
            epsilon = 1e-14
        );
        assert_relative_eq!(plan.relay_power(&p), crate::relay_power_of(&p, &alloc), epsilon = 1e-14);
    }

    #[test]
    fn iaf_plan_matches_iaf_rate() {
        let p = fig2a();
        let plan = plan_bands(&iaf_allocation(&p), &p, 0.01 * PI).unwrap();
        assert_relative_eq!(achieved_rate(&plan, &p).unwrap(), iaf_rate(&p), epsilon = 1e-14);
    }

    #[test]
    fn transitions_never_raise_relay_power() {
        let p = fig2a();
        let alloc = ModeAllocation {
            tau: vec![0.2, 0.3, 0.5],
            theta: vec![0.1, 0.3, 0.6],
            lambda: vec![0.6.into(), (-0.2).into()],
        };
        let base = plan_bands(&alloc, &p, 0.0).unwrap().relay_power(&p);
        for delta in [0.001, 0.01, 0.1] {
            let plan = plan_bands(&alloc, &p, delta).unwrap();
            assert!(plan.relay_power(&p) <= base + 1e-15);
            let mean_psd: f64 = (0..plan.bands.len())
                .map(|k| {
                    let (lo, hi) = plan.flat(k);
                    (hi - lo) * plan.bands[k].psd
                })
                .sum::<f64>()
                / PI;
            assert_relative_eq!(mean_psd, p.power, epsilon = 1e-14);
        }
    }

    #[test]
    fn flat_gain_gives_single_tap() {
        let p = fig2a();
        let plan = plan_bands(&ModeAllocation::single_mode(0.4.into()), &p, 0.0).unwrap();
        let taps = synthesize_taps(&plan, 16).unwrap();
        assert_relative_eq!(taps.tap(0).re, 0.4, epsilon = 1e-15);
        assert!((1..=16).all(|j| taps.tap(j).norm() < 1e-15));
        assert!(synthesize_taps(&plan, 0).is_err());
    }

    #[test]
    fn text_and_json_round_trip() {
        let p = fig2a();
        let plan = plan_bands(&two_band(0.3), &p, 0.05).unwrap();
        let taps = synthesize_taps(&plan, 32).unwrap();
        let mut text = Vec::new();
        write_taps_text(&taps, &mut text).unwrap();
        assert_eq!(read_taps_text(text.as_slice()).unwrap(), taps);
        let file = TapFile::new(plan, taps);
        assert_eq!(TapFile::from_json(&file.to_json().unwrap()).unwrap(), file);
        assert!(read_taps_text("0 1.0\n".as_bytes()).is_err());
        assert!(read_taps_text("1 1 0\n".as_bytes()).is_err());
    }
}
