mod common;

use std::f64::consts::PI;

use ltirelay::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn real_params() -> impl Strategy<Value = ChannelParams> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.1..10.0f64, 0.01..20.0f64, 0.1..5.0f64)
        .prop_map(|(a, b, s2, p, g)| ChannelParams::real(a, b, s2, p, g).unwrap())
}

fn complex_params() -> impl Strategy<Value = ChannelParams> {
    (
        (-3.0..3.0f64, -3.0..3.0f64),
        (-3.0..3.0f64, -3.0..3.0f64),
        0.1..10.0f64,
        0.01..20.0f64,
        0.1..5.0f64,
    )
        .prop_map(|((ar, ai), (br, bi), s2, p, g)| {
            ChannelParams::new(Complex64::new(ar, ai), Complex64::new(br, bi), s2, p, g).unwrap()
        })
}

/// Positive spectrum `P(1 + c₁cos ω + c₂cos 2ω)` with `|c₁| + |c₂| < 1`.
fn cosine_spectrum(m: usize, p: f64, c1: f64, c2: f64) -> PowerSpectrum {
    PowerSpectrum::from_fn(m, |w| p * (1.0 + c1 * w.cos() + c2 * (2.0 * w).cos()))
}

/// Affordable allocation with band fractions that are multiples of `1/m`,
/// and the matching piecewise-constant spectra with whole bins per mode.
fn binned(counts: &[usize], theta: &[f64], lambda: &[f64], params: &ChannelParams) -> (ModeAllocation, PowerSpectrum, FrequencyResponse) {
    let m: usize = counts.iter().sum();
    let alloc = affordable(params, ModeAllocation {
        tau: counts.iter().map(|&c| c as f64 / m as f64).collect(),
        theta: theta.to_vec(),
        lambda: lambda.iter().map(|&l| l.into()).collect(),
    });
    let mut fs = Vec::with_capacity(m);
    let mut h = Vec::with_capacity(m);
    for (j, &c) in counts.iter().enumerate() {
        let gain = if j == 0 { Complex64::new(0.0, 0.0) } else { alloc.lambda[j - 1] };
        fs.extend(std::iter::repeat(alloc.theta[j] * params.power / alloc.tau[j]).take(c));
        h.extend(std::iter::repeat(gain).take(c));
    }
    (alloc, SpectrumGrid::new(fs).unwrap(), SpectrumGrid::new(h).unwrap())
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Shrinks the gains until the allocation fits the relay budget.
fn affordable(params: &ChannelParams, mut alloc: ModeAllocation) -> ModeAllocation {
    let used = relay_power_of(params, &alloc);
    if used > params.relay_budget() {
        let f = (params.relay_budget() / used).sqrt() * (1.0 - 1e-12);
        alloc.lambda.iter_mut().for_each(|l| *l *= f);
    }
    alloc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matched_filter_identity(params in complex_params(), lam in -4.0..4.0f64) {
        let lib = effective_snr_fd(&params, lam * lam).unwrap();
        let reference = common::matched_filter_snr(params.a, params.b, lam * lam, params.power, params.sigma2);
        prop_assert!((lib - reference).abs() <= 1e-12 * reference);
    }

    #[test]
    fn destination_spectrum_at_least_one(
        params in complex_params(),
        c1 in -0.5..0.5f64,
        c2 in -0.4..0.4f64,
        h0 in -2.0..2.0f64,
        h1 in -2.0..2.0f64,
    ) {
        let fs = cosine_spectrum(128, params.power, c1, c2);
        let taps = FilterTaps::from_real(&[h1, h0, h1]).unwrap();
        let fd = spectrum_fd(&fs, &taps.response(128), &params).unwrap();
        prop_assert!(fd.values().iter().all(|&v| v >= 1.0));
        let fr = spectrum_fr(&fs, &taps.response(128), &params).unwrap();
        prop_assert!(fr.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cap_is_increasing_and_concave(x in 0.0..100.0f64, dx in 1e-3..10.0f64) {
        let (c0, c1, c2) = (cap(x).unwrap(), cap(x + dx).unwrap(), cap(x + 2.0 * dx).unwrap());
        prop_assert!(c1 > c0);
        prop_assert!(c1 - c0 >= c2 - c1 - 1e-15);
    }

    #[test]
    fn baselines_are_ordered(params in real_params()) {
        let direct = direct_rate(&params);
        let iaf = iaf_rate(&params);
        prop_assert!(iaf >= direct - 1e-15);
        prop_assert!(iaf >= iaf_rate_full_power(&params) - 1e-15);
        prop_assert!(cutset_bound(&params) >= iaf - 1e-12);
        prop_assert!(relay_power_of(&params, &iaf_allocation(&params)) <= params.relay_budget() * (1.0 + 1e-12));
    }

    #[test]
    fn allocation_rate_scale_invariant(
        params in real_params(),
        raw_tau in prop::collection::vec(0.01..1.0f64, 3),
        raw_theta in prop::collection::vec(0.0..1.0f64, 3),
        lams in prop::collection::vec(-1.0..1.0f64, 2),
        c in 0.01..100.0f64,
    ) {
        let theta = if raw_theta.iter().sum::<f64>() > 0.0 { normalized(&raw_theta) } else { vec![1.0, 0.0, 0.0] };
        let alloc = affordable(&params, ModeAllocation {
            tau: normalized(&raw_tau),
            theta,
            lambda: lams.iter().map(|&l| l.into()).collect(),
        });
        let scaled = ChannelParams::real(params.a.re, params.b.re, c * params.sigma2, c * params.power, params.gamma).unwrap();
        let r0 = allocation_rate(&params, &alloc).unwrap();
        let r1 = allocation_rate(&scaled, &alloc).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-12 * r0.max(1.0));
    }

    #[test]
    fn spectral_rate_reproduces_mode_rate(
        params in real_params(),
        counts in prop::collection::vec(1usize..2000, 3),
        raw_theta in prop::collection::vec(0.01..1.0f64, 3),
        lams in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let (alloc, fs, h) = binned(&counts, &normalized(&raw_theta), &lams, &params);
        let spectral = spectral_rate(&fs, &h, &params).unwrap();
        let modes = allocation_rate(&params, &alloc).unwrap();
        prop_assert!((spectral - modes).abs() <= 1e-6, "{spectral} vs {modes}");
    }

    #[test]
    fn toeplitz_mi_joint_scaling(
        params in real_params(),
        c1 in -0.5..0.5f64,
        h in prop::collection::vec(-1.0..1.0f64, 3),
        n in 1usize..24,
        c in 0.1..10.0f64,
    ) {
        let taps = FilterTaps::from_real(&h).unwrap();
        let fs = cosine_spectrum(64, params.power, c1, 0.0);
        let scaled = ChannelParams::real(params.a.re, params.b.re, c * params.sigma2, c * params.power, params.gamma).unwrap();
        let fs_scaled = cosine_spectrum(64, scaled.power, c1, 0.0);
        let r0 = toeplitz_mi(&fs, &taps, &params, n).unwrap();
        let r1 = toeplitz_mi(&fs_scaled, &taps, &scaled, n).unwrap();
        prop_assert!(r0 >= 0.0);
        prop_assert!((r0 - r1).abs() <= 1e-9, "{r0} vs {r1}");
    }

    #[test]
    fn aligned_relay_sign_helps(
        a in 0.01..3.0f64,
        b in 0.01..3.0f64,
        lam in 0.0..2.0f64,
        p in 0.01..10.0f64,
        n in 1usize..16,
    ) {
        let params = ChannelParams::real(a, b, 1.0, p, 1.0).unwrap();
        let white = PowerSpectrum::constant(32, p);
        let plus = toeplitz_mi(&white, &FilterTaps::one_tap(lam.into()), &params, n).unwrap();
        let minus = toeplitz_mi(&white, &FilterTaps::one_tap((-lam).into()), &params, n).unwrap();
        prop_assert!(plus >= minus - 1e-12);
    }

    #[test]
    fn white_one_tap_block_rate_is_closed_form(params in complex_params(), lr in -1.0..1.0f64, li in -1.0..1.0f64, n in 1usize..20) {
        let lam = Complex64::new(lr, li);
        let white = PowerSpectrum::constant(64, params.power);
        let block = toeplitz_mi(&white, &FilterTaps::one_tap(lam), &params, n).unwrap();
        prop_assert!((block - common::cap(effective_snr_lti(&params, lam))).abs() <= 1e-12);
    }

    #[test]
    fn plan_round_trip_and_order_invariance(
        params in real_params(),
        raw_tau in prop::collection::vec(0.05..1.0f64, 3),
        raw_theta in prop::collection::vec(0.0..1.0f64, 3),
        lams in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let theta = if raw_theta.iter().sum::<f64>() > 0.0 { normalized(&raw_theta) } else { vec![1.0, 0.0, 0.0] };
        let alloc = affordable(&params, ModeAllocation {
            tau: normalized(&raw_tau),
            theta,
            lambda: lams.iter().map(|&l| l.into()).collect(),
        });
        let rate = allocation_rate(&params, &alloc).unwrap();
        let plan = plan_bands(&alloc, &params, 0.0).unwrap();
        prop_assert!((achieved_rate(&plan, &params).unwrap() - rate).abs() <= 1e-12);
        let widths: f64 = plan.bands.iter().map(|b| b.hi - b.lo).sum::<f64>() / PI;
        prop_assert!((widths - 1.0).abs() <= 1e-9);

        let swapped = ModeAllocation {
            tau: vec![alloc.tau[0], alloc.tau[2], alloc.tau[1]],
            theta: vec![alloc.theta[0], alloc.theta[2], alloc.theta[1]],
            lambda: vec![alloc.lambda[1], alloc.lambda[0]],
        };
        let other = plan_bands(&swapped, &params, 0.0).unwrap();
        prop_assert!((achieved_rate(&other, &params).unwrap() - rate).abs() <= 1e-9);
    }

    #[test]
    fn taps_symmetry_and_parseval(
        params in real_params(),
        raw_tau in prop::collection::vec(0.1..1.0f64, 3),
        lams in prop::collection::vec(-1.0..1.0f64, 2),
        li in -1.0..1.0f64,
    ) {
        let tau = normalized(&raw_tau);
        let alloc = affordable(&params, ModeAllocation {
            tau: tau.clone(),
            theta: tau.clone(),
            lambda: lams.iter().map(|&l| l.into()).collect(),
        });
        let plan = plan_bands(&alloc, &params, 0.01).unwrap();
        let taps = synthesize_taps(&plan, 64).unwrap();
        prop_assert!(taps.is_even(1e-12));
        prop_assert!(taps.taps().iter().all(|t| t.im.abs() <= 1e-12));

        // Parseval: white input, relay power from tap energy equals the
        // mean of the relay spectrum.
        let m = 1024;
        let white = PowerSpectrum::constant(m, params.power);
        let time = (params.a.norm_sqr() * params.power + params.sigma2) * taps.energy();
        let freq = spectrum_fr(&white, &taps.response(m), &params).unwrap().mean();
        prop_assert!((time - freq).abs() <= 1e-6 * freq.max(1.0));

        let mut complex = alloc.clone();
        complex.lambda[0] = Complex64::new(complex.lambda[0].re, li * complex.lambda[0].re.abs());
        let complex_params = ChannelParams::new(params.a, params.b, params.sigma2, params.power, 1e3).unwrap();
        let plan = plan_bands(&complex, &complex_params, 0.01).unwrap();
        let taps = synthesize_taps(&plan, 64).unwrap();
        prop_assert!(taps.is_even(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimizer_sandwich(params in real_params()) {
        let opts = SolverOptions { n_starts: 8, ..SolverOptions::default() };
        let sol = optimize_lti_real(&params, &opts).unwrap();
        let floor = direct_rate(&params).max(iaf_rate(&params));
        prop_assert!(sol.rate >= floor - 1e-9);
        prop_assert!(sol.rate <= cutset_bound(&params) + 1e-9);
        prop_assert!(sol.diagnostics.relay_power <= params.relay_budget() * (1.0 + 1e-9) + 1e-12);
        prop_assert!(sol.allocation.num_relay_modes() <= 7);
    }

    #[test]
    fn capacity_grows_with_power(a in 0.1..3.0f64, b in 0.1..3.0f64, p in 0.01..5.0f64, step in 0.01..5.0f64) {
        let opts = SolverOptions::default();
        let lo = optimize_lti_real(&ChannelParams::real(a, b, 1.0, p, 1.0).unwrap(), &opts).unwrap().rate;
        let hi = optimize_lti_real(&ChannelParams::real(a, b, 1.0, p + step, 1.0).unwrap(), &opts).unwrap().rate;
        prop_assert!(hi >= lo - 1e-9);
    }
}
