use std::f64::consts::PI;
use std::path::PathBuf;

use ltirelay::filterbank::synthesis_grid;
use ltirelay::optimizer::ACTIVE_TAU;
use ltirelay::*;
use num_complex::Complex64;
use serde::Serialize;

use crate::args::{Command, Common, Config, Format, Resolved, Scheme, Spacing, SweepParam};
use crate::{emit, to_json, Failure, SCHEMA_VERSION};

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Capacity(common) => capacity(&common),
        Command::Sweep(args) => sweep(args),
        Command::Oracle(args) => {
            let config = Config::load(args.common.config.as_ref())?;
            oracle(&Resolved::new(&args.common, &config)?, args.n.or(config.n).unwrap_or(64))
        }
        Command::Verify(args) => {
            let config = Config::load(args.common.config.as_ref())?;
            let sizes = args
                .block_sizes
                .or(config.block_sizes.clone())
                .unwrap_or_else(|| vec![32, 64, 128, 256]);
            verify(&Resolved::new(&args.common, &config)?, &sizes)
        }
        Command::Synth(args) => {
            let config = Config::load(args.common.config.as_ref())?;
            let delta = args.delta.or(config.delta).unwrap_or(0.01 * PI);
            let half_len = args.half_len.or(config.half_len).unwrap_or(4096);
            synth(&Resolved::new(&args.common, &config)?, delta, half_len)
        }
    }
}

fn resolve(common: &Common) -> Result<Resolved, Failure> {
    Resolved::new(common, &Config::load(common.config.as_ref())?)
}

fn unit_label(r: &Resolved) -> &'static str {
    r.unit.label()
}

#[derive(Serialize)]
struct CapacityReport {
    schema_version: u32,
    command: &'static str,
    unit: &'static str,
    params: ChannelParams,
    c_lti: f64,
    c_fd: f64,
    r_iaf: f64,
    r_iaf_full_power: f64,
    r_direct: f64,
    cutset: f64,
    cutset_classical: f64,
    allocation: ModeAllocation,
    relay_power: f64,
    relay_budget: f64,
    kkt: KKTReport,
    diagnostics: SearchDiagnostics,
}

fn capacity(common: &Common) -> Result<(), Failure> {
    let r = resolve(common)?;
    let params = r.params()?;
    let (report, sol) = rate_report(&params, &r.opts)?;
    let u = |bits: f64| r.unit.from_bits(bits);
    let out = CapacityReport {
        schema_version: SCHEMA_VERSION,
        command: "capacity",
        unit: unit_label(&r),
        params,
        c_lti: u(report.c_lti),
        c_fd: u(report.c_fd),
        r_iaf: u(report.r_iaf),
        r_iaf_full_power: u(iaf_rate_full_power(&params)),
        r_direct: u(report.r_direct),
        cutset: u(report.cutset),
        cutset_classical: u(classical_cutset_bound(&params)),
        relay_power: sol.diagnostics.relay_power,
        relay_budget: params.relay_budget(),
        allocation: report.allocation,
        kkt: sol.kkt,
        diagnostics: sol.diagnostics,
    };
    let body = match r.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&out),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["scheme", &format!("rate_{}", out.unit)]).map_err(csv_failure)?;
            for (name, rate) in [
                ("lti", out.c_lti),
                ("fd", out.c_fd),
                ("iaf", out.r_iaf),
                ("iaf-full", out.r_iaf_full_power),
                ("direct", out.r_direct),
                ("cutset", out.cutset),
                ("cutset-classical", out.cutset_classical),
            ] {
                w.write_record([name.to_string(), rate.to_string()]).map_err(csv_failure)?;
            }
            csv_string(w)?
        }
    };
    emit(r.out.as_deref(), &body)
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::solver(format!("csv output failed: {e}"), serde_json::Value::Null)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, Failure> {
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::solver(format!("csv output failed: {e}"), serde_json::Value::Null))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize, Clone)]
struct SweepRow {
    param: &'static str,
    value: f64,
    scheme: &'static str,
    rate_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_nats: Option<f64>,
    relay_power: Option<f64>,
    modes: Option<usize>,
}

fn sweep_values(args: &crate::args::SweepArgs, config: &Config) -> Result<Vec<f64>, Failure> {
    if let Some(v) = args.values.clone().or_else(|| config.values.clone()) {
        if v.is_empty() {
            return Err(Failure::Usage("--values must not be empty".into()));
        }
        return Ok(v);
    }
    let (Some(lo), Some(hi), Some(count)) = (
        args.min.or(config.min),
        args.max.or(config.max),
        args.count.or(config.count),
    ) else {
        return Err(Failure::Usage("give --values or all of --min, --max and --count".into()));
    };
    if count == 0 || !(lo <= hi) {
        return Err(Failure::Usage("sweep range needs min <= max and count >= 1".into()));
    }
    let spacing = args.spacing.or(config.spacing).unwrap_or(Spacing::Linear);
    if spacing == Spacing::Log && !(lo > 0.0) {
        return Err(Failure::Usage("log spacing needs min > 0".into()));
    }
    let step = |i: usize| if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
    Ok((0..count)
        .map(|i| match spacing {
            Spacing::Linear => lo + (hi - lo) * step(i),
            Spacing::Log if i + 1 == count && count > 1 => hi,
            Spacing::Log => 10f64.powf(lo.log10() + (hi.log10() - lo.log10()) * step(i)),
        })
        .collect())
}

fn with_value(base: &ChannelParams, param: SweepParam, value: f64) -> Result<ChannelParams, Failure> {
    let mut p = *base;
    match param {
        SweepParam::Power => p.power = value,
        SweepParam::Gamma => p.gamma = value,
        SweepParam::A => p.a = Complex64::new(value, 0.0),
        SweepParam::B => p.b = Complex64::new(value, 0.0),
    }
    p.validate()
        .map_err(|e| Failure::Usage(format!("sweep value {value} for {}: {e}", param.label())))?;
    Ok(p)
}

fn scheme_row(params: &ChannelParams, scheme: Scheme, opts: &SolverOptions) -> Result<(f64, Option<f64>, Option<usize>), Failure> {
    Ok(match scheme {
        Scheme::Lti | Scheme::LtiComplex => {
            let sol = if scheme == Scheme::Lti {
                optimize_lti_real(params, opts)?
            } else {
                optimize_lti_complex(params, opts)?
            };
            (
                sol.rate,
                Some(sol.diagnostics.relay_power),
                Some(sol.allocation.active_relay_modes(ACTIVE_TAU)),
            )
        }
        Scheme::Fd => {
            let sol = optimize_fd(params, opts)?;
            let modes = sol.allocation.tau.iter().skip(1).filter(|&&t| t > ACTIVE_TAU).count();
            (sol.rate, Some(sol.diagnostics.relay_power), Some(modes))
        }
        Scheme::Iaf => {
            let alloc = iaf_allocation(params);
            let modes = usize::from(alloc.lambda[0].norm() > 0.0);
            (iaf_rate(params), Some(relay_power_of(params, &alloc)), Some(modes))
        }
        Scheme::IafFull => {
            let alloc = ModeAllocation::single_mode(full_power_iaf_gain(params));
            let modes = usize::from(alloc.lambda[0].norm() > 0.0);
            (iaf_rate_full_power(params), Some(relay_power_of(params, &alloc)), Some(modes))
        }
        Scheme::Direct => (direct_rate(params), Some(0.0), Some(0)),
        Scheme::Cutset => (cutset_bound(params), None, None),
        Scheme::CutsetClassical => (classical_cutset_bound(params), None, None),
    })
}

fn sweep(args: crate::args::SweepArgs) -> Result<(), Failure> {
    let config = Config::load(args.common.config.as_ref())?;
    let r = Resolved::new(&args.common, &config)?;
    let param = args
        .param
        .or(config.param)
        .ok_or_else(|| Failure::Usage("missing required value --param".into()))?;
    let values = sweep_values(&args, &config)?;
    let schemes = args
        .schemes
        .clone()
        .or(config.schemes.clone())
        .unwrap_or_else(|| vec![Scheme::Lti, Scheme::Iaf, Scheme::Direct, Scheme::Cutset]);
    if schemes.is_empty() {
        return Err(Failure::Usage("--schemes must not be empty".into()));
    }
    let base = r.params_with(Some(param))?;
    let points = values
        .iter()
        .map(|&v| with_value(&base, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let nats = r.unit == RateUnit::Nats;
    let mut rows = Vec::new();
    for (p, &value) in points.iter().zip(&values) {
        for &scheme in &schemes {
            let (rate, relay, modes) = scheme_row(p, scheme, &r.opts)?;
            rows.push(SweepRow {
                param: param.label(),
                value,
                scheme: scheme.label(),
                rate_bits: rate,
                rate_nats: nats.then(|| RateUnit::Nats.from_bits(rate)),
                relay_power: relay,
                modes,
            });
        }
    }
    let body = match r.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "param": param.label(),
            "schemes": schemes.iter().map(|s| s.label()).collect::<Vec<_>>(),
            "rows": rows,
        })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["param", "value", "scheme", "rate_bits", "relay_power", "modes"];
            if nats {
                header.push("rate_nats");
            }
            w.write_record(&header).map_err(csv_failure)?;
            let opt = |x: Option<String>| x.unwrap_or_default();
            for row in &rows {
                let mut rec = vec![
                    row.param.to_string(),
                    row.value.to_string(),
                    row.scheme.to_string(),
                    row.rate_bits.to_string(),
                    opt(row.relay_power.map(|v| v.to_string())),
                    opt(row.modes.map(|v| v.to_string())),
                ];
                if let Some(n) = row.rate_nats {
                    rec.push(n.to_string());
                }
                w.write_record(&rec).map_err(csv_failure)?;
            }
            csv_string(w)?
        }
    };
    emit(r.out.as_deref(), &body)
}

#[derive(Serialize)]
struct OracleReport {
    schema_version: u32,
    command: &'static str,
    unit: &'static str,
    params: ChannelParams,
    n: usize,
    bin_rate: f64,
    mode_rate: f64,
    lifted_rate: f64,
    relative_gap: f64,
    clusters: usize,
    cluster_centers: Vec<f64>,
    cluster_tau: Vec<f64>,
    cluster_spread: f64,
    iterations: usize,
    alpha: f64,
    beta: f64,
    complementary_slackness: (f64, f64),
}

fn oracle(r: &Resolved, n: usize) -> Result<(), Failure> {
    if n < 2 {
        return Err(Failure::Usage(format!("--n must be at least 2, got {n}")));
    }
    let params = r.params()?;
    let bins = oracle_optimize(&params, n, &r.opts)?;
    let modes = optimize_lti_real(&params, &r.opts)?;
    let summary = cluster_lambdas(&bins, 1e-3);
    let lifted = lift_to_allocation(&summary, &params)?;
    let u = |bits: f64| r.unit.from_bits(bits);
    let gap = if modes.rate > 0.0 {
        (bins.rate - modes.rate).abs() / modes.rate
    } else {
        0.0
    };
    let out = OracleReport {
        schema_version: SCHEMA_VERSION,
        command: "oracle",
        unit: unit_label(r),
        params,
        n,
        bin_rate: u(bins.rate),
        mode_rate: u(modes.rate),
        lifted_rate: u(allocation_rate(&params, &lifted)?),
        relative_gap: gap,
        clusters: summary.nonzero_clusters(),
        cluster_centers: summary.centers.clone(),
        cluster_tau: summary.tau.clone(),
        cluster_spread: summary.max_spread,
        iterations: bins.iterations,
        alpha: bins.alpha,
        beta: bins.beta,
        complementary_slackness: bins.complementary_slackness(),
    };
    emit(r.out.as_deref(), &to_json(&out))
}

#[derive(Serialize, Clone)]
struct GapRow {
    case: &'static str,
    n: usize,
    toeplitz_mi: f64,
    spectral_rate: f64,
    gap: f64,
    source_gap: f64,
    relay_gap: f64,
}

const VERIFY_GRID: usize = 4096;

fn verify(r: &Resolved, sizes: &[usize]) -> Result<(), Failure> {
    if sizes.is_empty() || sizes.iter().any(|&n| n == 0 || 2 * n > VERIFY_GRID) {
        return Err(Failure::Usage(format!(
            "block sizes must lie in 1..={}",
            VERIFY_GRID / 2
        )));
    }
    let params = r.params()?;
    let flat = (
        "flat",
        PowerSpectrum::constant(VERIFY_GRID, params.power),
        FilterTaps::one_tap(iaf_gain(&params)),
    );
    let smooth = (
        "smooth",
        smooth_test_spectrum(VERIFY_GRID, params.power),
        FilterTaps::from_real(&[0.2, 0.5, 0.2]).expect("three taps"),
    );
    let sol = optimize_lti_real(&params, &r.opts)?;
    let narrowest = sol
        .allocation
        .tau
        .iter()
        .filter(|&&t| t > 0.0)
        .fold(1.0f64, |m, &t| m.min(t));
    let plan = plan_bands(&sol.allocation, &params, (0.05 * PI).min(0.2 * PI * narrowest))?;
    let modes = ("modes", plan.source_spectrum(VERIFY_GRID), synthesize_taps(&plan, 16)?);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (case, fs, taps) in [flat, smooth, modes] {
        let spectral = spectral_rate(&fs, &taps.response(VERIFY_GRID), &params)?;
        let mut case_rows = Vec::new();
        for &n in sizes {
            let block = toeplitz_mi(&fs, &taps, &params, n)?;
            let pc = power_checks(&fs, &taps, &params, n)?;
            case_rows.push(GapRow {
                case,
                n,
                toeplitz_mi: r.unit.from_bits(block),
                spectral_rate: r.unit.from_bits(spectral),
                gap: r.unit.from_bits((block - spectral).abs()),
                source_gap: pc.source_gap,
                relay_gap: pc.relay_gap,
            });
        }
        let (first, last) = (&case_rows[0], &case_rows[case_rows.len() - 1]);
        if last.gap > first.gap + 1e-12 {
            failures.push(format!("{case}: gap({}) = {:e} exceeds gap({}) = {:e}", last.n, last.gap, first.n, first.gap));
        }
        rows.extend(case_rows);
    }
    let body = match r.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": "verify",
            "unit": unit_label(r),
            "params": params,
            "rows": rows,
        })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["case", "n", "toeplitz_mi", "spectral_rate", "gap", "source_gap", "relay_gap"])
                .map_err(csv_failure)?;
            for row in &rows {
                w.write_record([
                    row.case.to_string(),
                    row.n.to_string(),
                    row.toeplitz_mi.to_string(),
                    row.spectral_rate.to_string(),
                    row.gap.to_string(),
                    row.source_gap.to_string(),
                    row.relay_gap.to_string(),
                ])
                .map_err(csv_failure)?;
            }
            csv_string(w)?
        }
    };
    emit(r.out.as_deref(), &body)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::solver("block rate did not approach the spectral rate", failures))
    }
}

#[derive(Serialize)]
struct SynthSummary {
    schema_version: u32,
    command: &'static str,
    unit: &'static str,
    params: ChannelParams,
    delta: f64,
    half_len: usize,
    bands: usize,
    c_lti: f64,
    ideal_bank_rate: f64,
    achieved: f64,
    ratio: f64,
    relay_power: f64,
    relay_budget: f64,
    stability_margin: f64,
    tail_mass: f64,
    taps_file: Option<PathBuf>,
}

fn synth(r: &Resolved, delta: f64, half_len: usize) -> Result<(), Failure> {
    if half_len == 0 {
        return Err(Failure::Usage("--L must be at least 1".into()));
    }
    let params = r.params()?;
    let sol = optimize_lti_real(&params, &r.opts)?;
    let plan = plan_bands(&sol.allocation, &params, delta).map_err(|e| Failure::Usage(e.to_string()))?;
    let taps = synthesize_taps(&plan, half_len)?;
    let m = (2 * synthesis_grid(&plan, half_len)).max(1 << 16);
    let (achieved, relay) = taps_rate(&plan, &taps, &params, m)?;
    let ratio = if sol.rate > 0.0 { achieved / sol.rate } else { 1.0 };
    let u = |bits: f64| r.unit.from_bits(bits);
    let summary = SynthSummary {
        schema_version: SCHEMA_VERSION,
        command: "synth",
        unit: unit_label(r),
        params,
        delta,
        half_len,
        bands: plan.bands.len(),
        c_lti: u(sol.rate),
        ideal_bank_rate: u(achieved_rate(&plan, &params)?),
        achieved: u(achieved),
        ratio,
        relay_power: relay,
        relay_budget: params.relay_budget(),
        stability_margin: taps.stability_margin(),
        tail_mass: taps.tail_mass(),
        taps_file: r.out.clone(),
    };
    if let Some(path) = &r.out {
        let body = match r.format.unwrap_or(Format::Csv) {
            Format::Json => TapFile::new(plan, taps).to_json()? + "\n",
            Format::Csv => {
                let mut buf = Vec::new();
                write_taps_text(&taps, &mut buf)?;
                String::from_utf8(buf).expect("tap text is UTF-8")
            }
        };
        emit(Some(path), &body)?;
    }
    emit(None, &to_json(&summary))?;
    if ratio < 0.9 {
        return Err(Failure::solver(format!("synthesized bank reaches only {ratio:.4} of C_LTI"), summary));
    }
    Ok(())
}
